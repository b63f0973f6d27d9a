"""Run summary generation (markdown via jinja2, plus a machine-readable JSON twin)."""

import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Tuple

from jinja2 import Environment, BaseLoader, Undefined

from utils.scenario import derived_quantities


def format_sig(value, digits: int = 4) -> str:
    """Number with a fixed count of significant digits; dashes for missing values."""
    if value is None or isinstance(value, Undefined):
        return "-"
    try:
        value = float(value)
    except (TypeError, ValueError):
        return str(value)
    if math.isnan(value):
        return "-"
    if math.isinf(value):
        return "inf"
    return f"{value:.{digits}g}"


def format_percent(value, digits: int = 1) -> str:
    if value is None or isinstance(value, Undefined):
        return "-"
    return f"{100.0 * float(value):.{digits}f}%"


def get_template() -> str:
    """Load the summary template."""
    template_path = Path(__file__).parent.parent / "templates" / "summary.md"
    if template_path.exists():
        return template_path.read_text(encoding='utf-8')
    return ""


def _create_jinja_env():
    """Create a Jinja2 Environment with number filters."""
    env = Environment(loader=BaseLoader(), trim_blocks=True, lstrip_blocks=True)
    env.filters['sig'] = format_sig
    env.filters['pct'] = format_percent
    return env


def json_ready(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_ready(v) for v in value]
    if hasattr(value, 'item') and callable(value.item):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def summary_data(context, manifest) -> Dict[str, Any]:
    """Everything the summary documents show, as plain data."""
    cfg = context.cfg
    derived = derived_quantities(cfg)
    data: Dict[str, Any] = {
        'manifest': manifest.to_dict(),
        'summary': context.get_summary(),
        'stages': [r.to_dict() for r in context.records.values()],
        'coupling': context.coupling_summary,
        'diffusion_length_m': derived.diffusion_length,
    }
    if context.power is not None:
        data['ring_power_per_robot_pW'] = context.power.per_robot_pW.tolist()
        data['parasitic_fraction'] = context.power.parasitic_fraction
        data['capped_rings'] = [k + 1 for k in context.power.capped_rings]
    if context.strategy is not None and context.strategy.field_phase is not None:
        data['field_phase'] = context.strategy.field_phase
    if context.ring_profile is not None:
        data['ring_profile'] = {
            'upstream_is_max': context.ring_profile.upstream_is_max,
            'interior_minimum': context.ring_profile.interior_minimum,
            'downstream_recovers': context.ring_profile.downstream_recovers,
        }
    if context.burst is not None:
        data['burst'] = asdict(context.burst)
    if context.balance is not None:
        data['balance'] = {**asdict(context.balance), 'residual': context.balance.residual,
                           'relative_residual': context.balance.relative_residual}
    if context.temperature is not None:
        data['heat_balance'] = {**asdict(context.temperature.balance),
                                'relative_residual': context.temperature.balance.relative_residual}
        data['max_temperature_location_m'] = list(context.temperature.max_location)
    if context.krogh is not None:
        data['krogh_max_deviation'] = context.krogh.max_deviation
    if context.upstream:
        data['upstream_drop'] = {f"{d * 1e6:.0f}um": v for d, v in sorted(context.upstream.items())}
    return json_ready(data)


def generate_summary(context, manifest, output_dir: Path) -> Tuple[Path, Path]:
    """
    Write summary.md and summary.json for a finished run.

    Returns:
        Paths of the markdown and JSON documents
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    data = summary_data(context, manifest)

    env = _create_jinja_env()
    template = env.from_string(get_template())
    markdown = template.render(cfg=context.cfg, design=context.design, run_date=context.run_date, **data)

    md_path = output_dir / 'summary.md'
    md_path.write_text(markdown, encoding='utf-8')
    json_path = output_dir / 'summary.json'
    json_path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding='utf-8')
    return md_path, json_path
