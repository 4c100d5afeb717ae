"""
Benchmark tools for the disqsim MCP server
"""

import json
import logging
from typing import Optional

from fastmcp import FastMCP

from disqsim.benchmarks import BenchmarkSpec, generate, parse_benchmark
from disqsim.benchmarks import list_benchmarks as benchmark_catalog
from disqsim.circuit import circuit_metrics
from disqsim.circuit_io import circuit_to_dict
from disqsim.errors import DisqSimError

logger = logging.getLogger(__name__)


async def list_benchmarks() -> dict:
    """List the benchmark families with their default sizes"""
    return {"success": True, "benchmarks": benchmark_catalog()}


async def generate_benchmark(name: str, size: Optional[int] = None) -> dict:
    """Generate a benchmark circuit as native JSON

    Args:
        name: Benchmark family (qec-steane, fulladder, ghz, tfim, qaoa, vqe)
        size: Qubit count (uses the family default if not specified)
    """
    try:
        spec: BenchmarkSpec = parse_benchmark(name if size is None else f"{name}:{size}")
        circuit = generate(spec)
        return {
            "success": True,
            "benchmark": spec.label,
            "metrics": circuit_metrics(circuit).to_dict(),
            "circuit": circuit_to_dict(circuit),
        }
    except DisqSimError as e:
        return {"error": f"Failed to generate benchmark: {e.message}"}
    except Exception as e:
        return {"error": f"Unexpected error: {str(e)}"}


def register_benchmark_tools(mcp: FastMCP):
    """Register all benchmark-related tools"""
    mcp.tool()(list_benchmarks)
    mcp.tool()(generate_benchmark)


def register_benchmark_resources(mcp: FastMCP):
    """Register all benchmark-related resources"""

    @mcp.resource("benchmarks://list")
    async def benchmarks_resource() -> str:
        """Benchmark catalog as a readable resource"""
        return json.dumps(benchmark_catalog(), indent=2)
