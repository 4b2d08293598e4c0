# Tests package for the sparse action generation pipeline
