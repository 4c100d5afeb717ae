"""
Tools module for the disqsim MCP server
Architecture, benchmark and pipeline tools
"""
