from .attributes import (
    Attribute,
    age_attribute,
    health_attribute,
    manipulate,
    manipulation_sweep,
    single_dim_attribute,
)
from .generators import (
    IdentityExtractor,
    IdentityGenerator,
    LinearExtractor,
    LinearGenerator,
    MlpGenerator,
    make_extractor,
    make_generator,
)
from .projection import LATENT_DIM, ProjectionConfig, mean_latent, project, projection_loss

__all__ = [
    "Attribute",
    "IdentityExtractor",
    "IdentityGenerator",
    "LATENT_DIM",
    "LinearExtractor",
    "LinearGenerator",
    "MlpGenerator",
    "ProjectionConfig",
    "age_attribute",
    "health_attribute",
    "make_extractor",
    "make_generator",
    "manipulate",
    "manipulation_sweep",
    "mean_latent",
    "project",
    "projection_loss",
    "single_dim_attribute",
]
