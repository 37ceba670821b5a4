"""Two-server oblivious transfer for quantum messages: simulator and verifier."""

__version__ = "0.1.0"
