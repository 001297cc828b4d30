"""Verify neural networks against VNN-LIB properties."""
from zonoverify.cli import main

if __name__ == "__main__":
    main()
