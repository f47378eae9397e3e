"""Infinite-swapping and parallel-tempering rate analysis and simulation."""
