"""Mesh stage - builds the axisymmetric grid."""

from typing import Dict

from physics.mesh import Region, build_mesh
from stages.base_stage import BaseStage


class MeshStage(BaseStage):
    stage_name = "mesh"
    stage_description = "Graded axisymmetric mesh with robot rings and tissue annulus"
    dependencies = []

    def run(self) -> Dict[str, float]:
        mesh = build_mesh(self.cfg)
        self.context.mesh = mesh
        residuals = {'cells': float(mesh.cell_count), 'nr': float(mesh.nr), 'nz': float(mesh.nz)}
        if mesh.ring_count:
            residuals['face_spacing'] = mesh.robot_face_spacing()
        return residuals

    def self_audit(self) -> bool:
        mesh = self.context.mesh
        ok = True
        if mesh.ring_count != self.cfg.robot.ring_count:
            self.flag(f"mesh has {mesh.ring_count} rings, config asks for {self.cfg.robot.ring_count}")
            ok = False
        if mesh.ring_count and mesh.region_volume(Region.ROBOT_INTERIOR) <= 0:
            self.flag("robot rings have no interior cells")
            ok = False
        return ok
