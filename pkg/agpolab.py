import logging
import os
import sys

import dotenv

dotenv.load_dotenv()

logging.basicConfig(
    level=os.getenv("AGPOLAB_LOG_LEVEL", "INFO").upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

from cli import run  # noqa: E402

if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
