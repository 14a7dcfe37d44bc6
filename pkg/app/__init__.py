"""Temporal knowledge-graph embedding engine"""
