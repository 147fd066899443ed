"""xplan: graph-guided trajectory planning on offline data.

Pipeline: offline trajectory datasets -> temporal-distance embedding ->
connectivity graph -> task planners (goal routes, multi-agent schedules,
inspection tours) -> waypoint-guided compositional denoising -> tracked
rollout and metrics.
"""

__version__ = "0.1.0"
