"""Пул рабочих потоков."""
