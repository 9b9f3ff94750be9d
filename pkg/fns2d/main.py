from __future__ import annotations

import logging
import sys

from dotenv import load_dotenv

from config import CFG
from harness.cli import run


def main():
    load_dotenv()
    cfg = CFG()

    logging.basicConfig(
        level=getattr(logging, cfg.LOG_LEVEL.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )

    # IMPORTANT: CFG must be built after load_dotenv, its env fields read os.environ
    sys.exit(run(sys.argv[1:], cfg))


if __name__ == "__main__":
    main()
