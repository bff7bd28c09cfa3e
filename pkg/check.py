#!/bin/sh


isort src/ tests/ && black src/ tests/ && flake8 --max-line-length 100 src/ && mypy src/
