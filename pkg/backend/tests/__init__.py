"""
Tests for the agebif backend
"""
