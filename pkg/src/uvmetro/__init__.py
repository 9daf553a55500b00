"""Quality measures for textured triangle meshes: geometry, UV atlas, textures, defects."""

__version__ = "0.1.0"
