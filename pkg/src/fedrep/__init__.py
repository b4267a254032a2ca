"""Desk-scale FedREP simulator."""
