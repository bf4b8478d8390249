"""
Tests for the --plots figures
"""
import pandas as pd

from visualization import ChartGenerator


def test_margin_chart_colours_by_outcome():
    """Test that passing and failing margins use the pass and fail colours"""
    charts = ChartGenerator()
    entries = [{'index': 0, 'margin': 0.4, 'passed': True}, {'index': 1, 'margin': -0.1, 'passed': False}]
    fig = charts.create_margin_chart(entries, 'margin', 'margins')
    colours = {trace.name: trace.marker.color for trace in fig.data}
    assert colours == {'pass': charts.color_palette['pass'], 'fail': charts.color_palette['fail']}


def test_margin_chart_without_values():
    """Test that entries lacking the value key give no figure"""
    assert ChartGenerator().create_margin_chart([{'index': 0}], 'margin', 'margins') is None


def test_refinement_chart_draws_loss_against_bound():
    """Test the refinement chart traces and their colours"""
    charts = ChartGenerator()
    steps = pd.DataFrame({'j': [1, 1, 2], 'k': [0, 1, 0], 'loss': [0.01, 0.02, 0.005], 'bound': [0.1, 0.1, 0.05]})
    fig = charts.create_refinement_chart(steps)
    loss, bound = fig.data
    assert list(loss.x) == ['j=1, k=0', 'j=1, k=1', 'j=2, k=0']
    assert loss.marker.color == charts.color_palette['measured']
    assert bound.marker.color == charts.color_palette['bound']


def test_growth_curve_traces():
    """Test that the growth curve carries the bound, the exact form and both normalisations"""
    charts = ChartGenerator()
    ledger = pd.DataFrame({'m': [2, 10, 100], 'ratio': [1.0, 0.5, 0.2], 'ratio_exact': [1.0, 0.5, 0.2],
                           'normalized': [1.0, 1.1, 1.2], 'asymptotic_ratio': [1.0, 1.0, 1.0]})
    fig = charts.create_growth_curve(ledger, 0.5)
    assert [t.name for t in fig.data] == ['bound form', 'exact log(log 2 + x)', 'normalized', 'asymptotic_ratio']
    assert fig.data[3].line.color == charts.color_palette['asymptotic']
