import logging
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from fields import Field, LogField

logger = logging.getLogger(__name__)


class ChartGenerator:
    """Handles creation of all figures written with --plots"""

    def __init__(self, max_nodes: int = 401):
        self.max_nodes = max_nodes
        self.color_palette = {
            'measured': '#1f77b4',
            'exact': '#ff7f0e',
            'bound': '#d62728',
            'normalized': '#17becf',
            'asymptotic': '#9467bd',
            'pass': '#2ca02c',
            'fail': '#d62728',
        }

    def _downsample(self, f: Field) -> tuple:
        step = max(1, int(np.ceil(f.grid.n / self.max_nodes)))
        return f.grid.xs[::step], f.grid.ys[::step], f.values[::step, ::step]

    def create_field_heatmap(self, f: Field, title: str, log_scale: bool = False) -> go.Figure:
        """
        Heatmap of a field on its grid

        Args:
            f: Real, complex (modulus shown) or log field
            title: Figure title
            log_scale: Show log10 of the magnitudes

        Returns:
            Plotly figure
        """
        xs, ys, values = self._downsample(f)
        if isinstance(f, LogField):
            z = np.where(np.isneginf(values), np.nan, values)
            colorbar = 'log value'
        else:
            z = np.abs(values) if np.iscomplexobj(values) else np.asarray(values, dtype=float)
            colorbar = '|value|' if np.iscomplexobj(values) else 'value'
            if log_scale:
                with np.errstate(divide='ignore'):
                    z = np.where(z > 0, np.log10(z), np.nan)
                colorbar = f"log10 {colorbar}"

        fig = go.Figure(data=go.Heatmap(x=xs, y=ys, z=z, colorscale='Blues',
                                        colorbar=dict(title=colorbar)))
        fig.update_layout(
            title=title,
            title_font_size=16,
            xaxis_title='Re z',
            yaxis_title='Im z',
            height=600,
            yaxis=dict(scaleanchor='x', scaleratio=1)
        )
        return fig

    def create_growth_curve(self, ledger: pd.DataFrame, eps: float) -> go.Figure:
        """Ledger ratio and its normalisations against m, log-log axes"""
        fig = make_subplots(rows=2, cols=1, shared_xaxes=True, vertical_spacing=0.08,
                            subplot_titles=(f"ratio(m, {eps:g})", 'normalised ratio'))

        fig.add_trace(go.Scatter(
            x=ledger['m'],
            y=ledger['ratio'],
            mode='lines+markers',
            name='bound form',
            line=dict(color=self.color_palette['measured'], width=3),
            marker=dict(size=5)
        ), row=1, col=1)

        fig.add_trace(go.Scatter(
            x=ledger['m'],
            y=ledger['ratio_exact'],
            mode='lines',
            name='exact log(log 2 + x)',
            line=dict(color=self.color_palette['exact'], width=2, dash='dot')
        ), row=1, col=1)

        for column, color in (('normalized', 'normalized'), ('asymptotic_ratio', 'asymptotic')):
            fig.add_trace(go.Scatter(
                x=ledger['m'],
                y=ledger[column],
                mode='lines+markers',
                name=column,
                line=dict(color=self.color_palette[color], width=2),
                marker=dict(size=4)
            ), row=2, col=1)

        fig.update_xaxes(type='log', title_text='m', row=2, col=1)
        fig.update_xaxes(type='log', row=1, col=1)
        fig.update_yaxes(type='log', row=1, col=1)
        fig.update_layout(
            title='Growth ledger',
            title_font_size=16,
            height=700,
            hovermode='x unified',
            legend=dict(
                yanchor="top",
                y=0.99,
                xanchor="right",
                x=0.99
            )
        )
        return fig

    def create_refinement_chart(self, steps: pd.DataFrame) -> go.Figure:
        """Per-step measured loss against its bound, one group per level"""
        df = steps.copy()
        df['step'] = 'j=' + df['j'].astype(str) + ', k=' + df['k'].astype(str)

        fig = go.Figure()
        fig.add_trace(go.Bar(
            x=df['step'],
            y=df['loss'],
            name='measured loss',
            marker_color=self.color_palette['measured']
        ))
        fig.add_trace(go.Scatter(
            x=df['step'],
            y=df['bound'],
            mode='markers',
            name='bound',
            marker=dict(color=self.color_palette['bound'], size=10, symbol='line-ew-open')
        ))
        fig.update_layout(
            title='Nested refinement losses',
            title_font_size=16,
            xaxis_title='Step',
            yaxis_title='Measure',
            height=450,
            barmode='group'
        )
        return fig

    def create_margin_chart(self, entries: List[Dict[str, Any]], value_key: str, title: str,
                            label_key: str = 'index') -> Optional[go.Figure]:
        """Horizontal bar chart of per-item check margins; None when there is nothing to show"""
        rows = [e for e in entries if value_key in e]
        if not rows:
            logger.debug(f"No '{value_key}' entries for {title}")
            return None
        df = pd.DataFrame({
            'item': [str(e.get(label_key, i)) for i, e in enumerate(rows)],
            value_key: [float(e[value_key]) for e in rows],
            'passed': ['pass' if e.get('passed', True) else 'fail' for e in rows],
        })
        fig = px.bar(
            df,
            x=value_key,
            y='item',
            orientation='h',
            title=title,
            color='passed',
            color_discrete_map={k: self.color_palette[k] for k in ('pass', 'fail')}
        )
        fig.update_layout(
            title_font_size=16,
            xaxis_title=value_key,
            yaxis_title=label_key,
            height=max(300, 20 * len(rows)),
        )
        return fig
