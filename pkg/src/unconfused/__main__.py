"""python -m unconfused delegates to the command-line entry point."""
from .cli import console_main

if __name__ == "__main__":
    console_main()
