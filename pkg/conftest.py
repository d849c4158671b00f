"""Configure Django for pytest, matching manage.py's settings module."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'lcra_sim.settings')
django.setup()
