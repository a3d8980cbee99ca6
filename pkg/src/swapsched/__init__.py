"""Charging schedules for battery swapping stations."""
