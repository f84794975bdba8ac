"""Secrecy-energy-efficient resource allocation for RIS-aided multi-user uplinks."""
