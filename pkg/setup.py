#!/usr/bin/env python
"""Packaging logic - see pyproject.toml."""

from setuptools import setup

setup()
