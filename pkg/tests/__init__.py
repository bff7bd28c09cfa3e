# Test package for toddlerlab
