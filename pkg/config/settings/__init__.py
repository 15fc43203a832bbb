# Settings package