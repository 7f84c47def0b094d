"""Command-line layer of fracbump."""
