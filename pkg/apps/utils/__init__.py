"""
Shared helpers: base serializers, base command, thread pool
"""
