"""Persistence-guided discrete Morse skeletonization of 3-D density fields."""
