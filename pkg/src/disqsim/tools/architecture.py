"""
Architecture tools for the disqsim MCP server
"""

import logging
from typing import Optional

from fastmcp import FastMCP

from disqsim.architecture import (
    canonical_json,
    list_presets,
    load_architecture,
    parse_architecture,
    summarize,
)
from disqsim.errors import DisqSimError

logger = logging.getLogger(__name__)


async def list_architectures() -> dict:
    """List the shipped architecture presets"""
    return {"success": True, "architectures": list_presets()}


async def validate_architecture(arch: Optional[str] = None, spec: Optional[dict] = None) -> dict:
    """Validate an architecture given by preset name, file path or inline JSON

    Args:
        arch: Preset name (e.g. arch-b) or path to an architecture file
        spec: Inline architecture document with qpus, network and partition sections
    """
    if (arch is None) == (spec is None):
        return {"error": "Give exactly one of arch or spec"}
    try:
        parsed = parse_architecture(spec) if spec is not None else load_architecture(arch)
        return {"success": True, "valid": True, "architecture": summarize(parsed)}
    except DisqSimError as e:
        logger.info(f"Architecture rejected: {e.message}")
        return {"success": True, "valid": False, "reason": e.message}
    except Exception as e:
        return {"error": f"Unexpected error: {str(e)}"}


def register_architecture_tools(mcp: FastMCP):
    """Register all architecture-related tools"""
    mcp.tool()(list_architectures)
    mcp.tool()(validate_architecture)


def register_architecture_resources(mcp: FastMCP):
    """Register all architecture-related resources"""

    @mcp.resource("architectures://{name}")
    async def architecture_resource(name: str) -> str:
        """Canonical JSON of an architecture preset"""
        try:
            return canonical_json(load_architecture(name))
        except DisqSimError as e:
            return f"Error loading architecture: {e.message}"
