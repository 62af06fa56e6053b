"""
Services for signflow
"""
