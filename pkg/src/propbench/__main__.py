"""Module entry point: ``python -m propbench``."""

from .cli import main

if __name__ == "__main__":
    main()
