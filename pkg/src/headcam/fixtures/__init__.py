from .episodic import EpisodicWorldConfig, generate_episodic, render_latents
from .shapes import ShapeWorldConfig, generate_shapes
from .writer import write_dataset
