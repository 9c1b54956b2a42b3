"""Phase determination of a continuously measured Bose-Hubbard chain."""
__version__ = "0.1.0"
