"""pixeldefer: pixel-wise learning-to-defer for binary segmentation.

A small convolutional segmentor carries per-pixel routing channels that send
each pixel either to its own prediction or to one of J experts. Training
combines a routing collaboration loss, a spatial-coherence loss on a smooth
deferral map, and a load-balancing penalty on per-expert workloads. The
package ships a synthetic dataset generator, region-conditional expert
simulators, branch-wise evaluation, sweep runners, a CLI, and an annotation
service for human experts.
"""

__version__ = "0.1.0"
