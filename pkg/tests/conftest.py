"""Shared dataset builders live in dataset_fixtures."""
