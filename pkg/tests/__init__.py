"""
Tests for signflow
"""
