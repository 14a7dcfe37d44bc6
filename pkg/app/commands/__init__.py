"""TKGE Command Package"""
from . import data, evaluate, infer, train

COMMAND_MODULES = [data, train, evaluate, infer]

__all__ = ["COMMAND_MODULES"]
