"""
Command-line pipelines. All functions write files; nothing here is read-only.
"""
