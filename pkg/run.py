#!/usr/bin/env python3
"""
TowerPlan Runner
Command-line entry point: python run.py <command> <scenario> [options]
"""

from towerplan.main import main

if __name__ == "__main__":
    main()
