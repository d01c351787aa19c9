# Cross-app acceptance tests for the spectral lab
