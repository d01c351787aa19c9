# Run ledger for spectral commands
