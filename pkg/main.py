"""
TKGE command-line entry point
Usage: python main.py <prepare|stats|train|grid|eval|infer> [flags]
"""
import sys

from app.main import main


if __name__ == "__main__":
    sys.exit(main())
