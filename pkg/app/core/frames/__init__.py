"""Чтение и запись кадров."""
