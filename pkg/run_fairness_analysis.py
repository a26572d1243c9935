#!/usr/bin/env python3
"""
Entry point for fairness inference runs (estimate / simulate / importance)
"""

import sys
from pathlib import Path

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
