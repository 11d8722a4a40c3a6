from importlib import metadata

from langchain_extremal.tools import (
    BallPointClassificationTool,
    LinearExtremalityTool,
    PorosityWitnessTool,
    UrysohnPairTool,
)

try:
    __version__ = metadata.version(__package__ or "langchain-extremal")
except metadata.PackageNotFoundError:
    # Case where package metadata is not available.
    __version__ = "0.1.0"
del metadata  # optional, avoids polluting the results of dir(__package__)

__all__ = [
    "BallPointClassificationTool",
    "LinearExtremalityTool",
    "PorosityWitnessTool",
    "UrysohnPairTool",
    "__version__",
]
