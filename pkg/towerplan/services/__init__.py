"""
TowerPlan - Services
Scene, propagation, metrics, objective, optimizer, oracle and report services.
"""
