"""Module entry point: ``python -m typedrnn`` behaves like the console script."""

from .cli import console_main

console_main()
