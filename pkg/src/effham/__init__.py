"""Higher-order effective Hamiltonians of detuned quantum systems, with numerical validation."""
