#!/usr/bin/env python
"""Entry point for the scenefuzz command line.

The implementation lives in the scenefuzz.campaign package.

Usage:
    python scripts/fuzz_app.py run -c configs/quick.json -o runs/quick

    # Or from the package:
    python -m scenefuzz.campaign run -c configs/quick.json
"""

from __future__ import annotations

import sys
from pathlib import Path

# Allow running directly from repo without installation
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from scenefuzz.campaign import main

if __name__ == "__main__":
    main()
