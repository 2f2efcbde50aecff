"""Meshes, discrete spaces and assembly."""
from .assembly import (AssembledSystem, DiscreteSpace, ForceField, assemble_3d_form, assemble_3d_load,
                       assemble_3d_system, assemble_constraints_2d, assemble_constraints_3d,
                       assemble_d3_gram, assemble_flexural_form, assemble_h1_gram_3d,
                       assemble_koiter_system, assemble_membrane_form, assemble_membrane_system,
                       assemble_strain_gram_3d, averaging_matrix, koiter_parts, make_space,
                       membrane_load, phi_from_F, seminorm_distance, seminorm_gram, seminorm_gram_3d,
                       surface_strains)
from .mesh import Mesh2D, Mesh3D, build_mesh2d, build_mesh3d

__all__ = [
    "AssembledSystem", "DiscreteSpace", "ForceField", "Mesh2D", "Mesh3D",
    "assemble_3d_form", "assemble_3d_load", "assemble_3d_system", "assemble_constraints_2d",
    "assemble_constraints_3d", "assemble_d3_gram", "assemble_flexural_form", "assemble_h1_gram_3d",
    "assemble_koiter_system", "assemble_membrane_form", "assemble_membrane_system",
    "assemble_strain_gram_3d", "averaging_matrix", "build_mesh2d", "build_mesh3d", "koiter_parts",
    "make_space", "membrane_load", "phi_from_F", "seminorm_distance", "seminorm_gram",
    "seminorm_gram_3d", "surface_strains",
]
