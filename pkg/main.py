import sys

import dotenv
from loguru import logger as LOGGER

from configuration.config import get_config
from configuration.types import ConfigError, Configuration
from rfmissing.cli import run
from rfmissing.errors import RfMissingError


def main(config: Configuration):
    LOGGER.remove()
    LOGGER.add(sys.stderr, level=config.log_level)
    run(config)


if __name__ == "__main__":
    dotenv.load_dotenv()

    try:
        config = get_config()
        main(config)
    except (ConfigError, RfMissingError, OSError) as e:
        LOGGER.critical(f"{type(e).__name__}: {e}")
        sys.exit(1)
