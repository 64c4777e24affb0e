"""Configure Django for pytest so the crp SimpleTestCase suites can run."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'cocreation.settings')
django.setup()
