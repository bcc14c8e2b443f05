"""This file handles the extension singletons for the mgrlab package."""

from flask_sqlalchemy import SQLAlchemy

db = SQLAlchemy()
