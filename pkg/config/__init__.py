"""This file marks the config package that holds the environment settings."""
