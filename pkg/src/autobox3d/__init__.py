"""Batch 3D vehicle auto-labelling from depth, instance masks and ego-motion.

The pipeline lifts depth maps to camera-frame point clouds, tracks
instances across an aggregation window, classifies each track as
stationary or moving, fits an oriented box (axis-angle criterion scan or
trajectory heading), refines the position against a vehicle template,
and writes KITTI-format labels. A synthetic scene generator and a
rotated-IoU average-precision evaluator close the loop without any
dataset or network dependency.
"""

__version__ = "0.1.0"
