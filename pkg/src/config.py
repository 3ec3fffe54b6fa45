import os
import sys
from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from loguru import logger

# Configure logging to output text to stdout
LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level} | {message}"
logger.remove()
logger.add(sys.stdout, format=LOG_FORMAT)

# Constants
DEFAULT_CACHE_DIR = ".scr-cache"
LOCK_TIMEOUT = 5


class Settings(BaseSettings):
    LOG_LEVEL: str = "INFO"
    SCR_THREADS: int = 1  # Worker threads for batched shortest paths
    SCR_CACHE_ENABLED: bool = True
    SCR_CACHE_DIR: str = DEFAULT_CACHE_DIR
    SCR_OUTPUT_DIR: Optional[str] = None  # Overrides [output] dir of the run config

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    def thread_count(self) -> int:
        if self.SCR_THREADS < 1:
            return 1
        return min(self.SCR_THREADS, os.cpu_count() or 1)

    def validate(self):
        # Update Log Level
        logger.remove()
        logger.add(sys.stdout, format=LOG_FORMAT, level=self.LOG_LEVEL.upper())


# Global config object
config = Settings()
