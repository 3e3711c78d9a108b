"""effects/builtin/__init__.py"""
