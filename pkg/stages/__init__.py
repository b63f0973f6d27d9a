"""Pipeline stages for the capillary power simulator."""

from .base_stage import BaseStage
from .mesh_stage import MeshStage
from .flow_stage import FlowStage
from .transport_stage import TransportStage
from .power_stage import PowerStage
from .thermal_stage import ThermalStage
from .audit_stage import AuditStage

STAGE_CLASSES = [MeshStage, FlowStage, TransportStage, PowerStage, ThermalStage, AuditStage]

__all__ = [
    'BaseStage', 'MeshStage', 'FlowStage', 'TransportStage', 'PowerStage', 'ThermalStage', 'AuditStage',
    'STAGE_CLASSES',
]
