"""This file marks the test package for the lab."""
