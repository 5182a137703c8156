"""Static SVG rendering of a recorded episode."""

from __future__ import annotations

from xml.sax.saxutils import escape

from sniffy.environment import Bundle
from sniffy.sim import RunMetrics

AGENT_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
SCALE = 50.0    # pixels per metre
MARGIN = 10.0


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def render_svg(bundle: Bundle, run: RunMetrics, success_radius: float = 1.5,
               show_waypoints: bool = True) -> str:
    """Walls, source, one polyline per agent, waypoint dots and crash markers.

    World y points up; the SVG is flipped so the picture matches the arena.
    """
    env = bundle.env
    w_px = env.width * SCALE + 2 * MARGIN
    h_px = env.height * SCALE + 2 * MARGIN

    def px(x: float, y: float) -> tuple[str, str]:
        return _fmt(MARGIN + x * SCALE), _fmt(MARGIN + (env.height - y) * SCALE)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w_px)}" height="{_fmt(h_px)}" '
        f'viewBox="0 0 {_fmt(w_px)} {_fmt(h_px)}">',
        f"<title>{escape(run.env_id)} {escape(run.policy)} seed {run.seed}</title>",
        f'<rect x="0" y="0" width="{_fmt(w_px)}" height="{_fmt(h_px)}" fill="white"/>',
        '<g id="walls" stroke="black" stroke-width="2" stroke-linecap="round">',
    ]
    for seg in env.walls:
        (x0, y0), (x1, y1) = px(seg.a.x, seg.a.y), px(seg.b.x, seg.b.y)
        out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}"/>')
    out.append("</g>")

    sx, sy = px(env.source.x, env.source.y)
    out.append('<g id="source">')
    out.append(f'<circle cx="{sx}" cy="{sy}" r="{_fmt(success_radius * SCALE)}" fill="none" '
               'stroke="#ff9900" stroke-dasharray="6 4"/>')
    out.append(f'<circle cx="{sx}" cy="{sy}" r="6" fill="#ff9900"/>')
    out.append("</g>")

    traj = run.trajectory
    n_agents = traj.shape[1]
    out.append('<g id="trajectories" fill="none" stroke-width="1.5">')
    for i in range(n_agents):
        pts = " ".join(",".join(px(x, y)) for x, y in traj[:, i, :])
        colour = AGENT_COLOURS[i % len(AGENT_COLOURS)]
        out.append(f'<polyline class="agent" data-agent="{i}" stroke="{colour}" points="{pts}"/>')
    out.append("</g>")

    if show_waypoints:
        out.append('<g id="waypoints">')
        for e in run.events:
            if e.kind != "waypoint":
                continue
            gx, gy = px(e.goal.x, e.goal.y)
            colour = AGENT_COLOURS[e.agent % len(AGENT_COLOURS)]
            out.append(f'<circle class="waypoint" cx="{gx}" cy="{gy}" r="2.5" fill="{colour}"/>')
        out.append("</g>")

    out.append('<g id="markers">')
    for i in range(n_agents):
        x, y = (float(v) for v in traj[-1, i])
        cx, cy = (float(v) for v in px(x, y))
        if run.crashed[i]:
            d = 6.0
            out.append(f'<path class="crash" data-agent="{i}" stroke="black" stroke-width="2" '
                       f'd="M{_fmt(cx - d)},{_fmt(cy - d)} L{_fmt(cx + d)},{_fmt(cy + d)} '
                       f'M{_fmt(cx - d)},{_fmt(cy + d)} L{_fmt(cx + d)},{_fmt(cy - d)}"/>')
        else:
            colour = AGENT_COLOURS[i % len(AGENT_COLOURS)]
            out.append(f'<circle class="end" data-agent="{i}" cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="4" '
                       f'fill="{colour}"/>')
    out.append("</g>")
    out.append(f"<desc>trajectory sha256 {run.trajectory_hash}</desc>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
