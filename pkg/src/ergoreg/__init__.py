"""Finite-time, damped and stochastically regularized averages over integrable flows."""

__version__ = "0.1.0"
