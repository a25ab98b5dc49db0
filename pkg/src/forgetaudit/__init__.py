"""Audit whether a classifier was trained on a query dataset."""
