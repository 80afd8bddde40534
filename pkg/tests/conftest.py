"""Makes the tests directory importable so the shared oracles can be used."""
