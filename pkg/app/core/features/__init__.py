"""Обнаружение и сопоставление особых точек."""
