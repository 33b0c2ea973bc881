# This file makes tests a Python package
# This helps with imports and module discovery
