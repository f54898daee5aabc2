from ._voxelseg import (
    connected_component_count,
    conv2d_valid,
    conv3d_valid,
    extract_patch,
    generate_phantom,
    gradient_check_preset,
    matmul,
    maxpool2d,
    postprocess,
    segmentation_metrics,
)

__all__ = [
    "connected_component_count",
    "conv2d_valid",
    "conv3d_valid",
    "extract_patch",
    "generate_phantom",
    "gradient_check_preset",
    "matmul",
    "maxpool2d",
    "postprocess",
    "segmentation_metrics",
]
