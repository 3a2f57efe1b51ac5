"""Allow running the CLI as a module: python -m scenefuzz.campaign"""

from .cli import main

if __name__ == "__main__":
    main()
