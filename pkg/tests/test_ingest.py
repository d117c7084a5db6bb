"""
Test suite for data ingestion module
Validates the long-format panel contract and dataset assembly
"""

import numpy as np
import pandas as pd
import pytest

from src.dataset import LongitudinalDataset, flat_to_tensor, tensor_to_flat
from src.errors import DataFormatError
from src.ingest import PanelIngester, load_long_csv, write_long_csv
from src.validation import validate_panel

WELL_FORMED = "subject,group,time,score\na,0,1,1.5\na,0,2,2.5\nb,1,1,3.0\nb,1,2,4.0\n"


def _write(tmp_path, text, name='panel.csv'):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLongitudinalDataset:
    """Dataset container and layout conversion"""

    def test_time_major_flattening(self):
        values = np.arange(12.0).reshape(2, 3, 2)
        flat = tensor_to_flat(values)
        # column k*p + l holds variable l at time k
        assert flat[0, 1] == values[0, 1, 0]
        assert flat[0, 3] == values[0, 0, 1]
        assert np.array_equal(flat_to_tensor(flat, p=3, t=2), values)

    def test_class_counts(self):
        ds = LongitudinalDataset.from_classes(np.zeros((3, 4)), np.ones((5, 4)), p=2, t=2)
        assert (ds.n, ds.n0, ds.n1) == (8, 3, 5)
        assert ds.variable_names == ['var1', 'var2']

    def test_missing_values_rejected(self):
        values = np.ones((2, 1, 2))
        values[0, 0, 1] = np.nan
        with pytest.raises(ValueError, match="missing"):
            LongitudinalDataset(values=values, labels=[0, 1])

    def test_non_binary_labels(self):
        with pytest.raises(ValueError, match="binary"):
            LongitudinalDataset(values=np.ones((2, 1, 2)), labels=[0, 2])

    def test_subset_allows_repeats(self):
        ds = LongitudinalDataset(values=np.arange(6.0).reshape(3, 1, 2), labels=[0, 1, 1],
                                 subject_ids=['a', 'b', 'c'])
        resample = ds.subset([2, 2, 0])
        assert resample.subject_ids == ['c', 'c', 'a']
        assert resample.labels.tolist() == [1, 1, 0]


class TestLoadLongCsv:
    """load_long_csv"""

    def test_well_formed_file(self, tmp_path):
        ds = load_long_csv(_write(tmp_path, WELL_FORMED))
        assert (ds.n, ds.p, ds.t) == (2, 1, 2)
        assert ds.labels.tolist() == [0, 1]
        assert ds.subject_ids == ['a', 'b']
        assert ds.values[1, 0].tolist() == [3.0, 4.0]

    def test_row_order_does_not_matter(self, tmp_path):
        shuffled = "subject,group,time,score\nb,1,2,4.0\na,0,2,2.5\nb,1,1,3.0\na,0,1,1.5\n"
        ds = load_long_csv(_write(tmp_path, shuffled))
        assert ds.subject_ids == ['b', 'a']
        assert ds.values[0, 0].tolist() == [3.0, 4.0]

    def test_missing_time_names_subject(self, tmp_path):
        text = "subject,group,time,score\na,0,1,1.5\na,0,2,2.5\nb,1,1,3.0\n"
        with pytest.raises(DataFormatError, match="subject b: missing time 2") as excinfo:
            load_long_csv(_write(tmp_path, text))
        assert excinfo.value.problems == ["subject b: missing time 2"]

    def test_group_out_of_range(self, tmp_path):
        text = WELL_FORMED.replace("b,1,1", "b,2,1")
        with pytest.raises(DataFormatError, match="line 4, column 'group'"):
            load_long_csv(_write(tmp_path, text))

    def test_non_numeric_cell(self, tmp_path):
        text = WELL_FORMED.replace("2.5", "n/a")
        with pytest.raises(DataFormatError, match="line 3, column 'score'"):
            load_long_csv(_write(tmp_path, text))

    def test_empty_cell_reported(self, tmp_path):
        text = WELL_FORMED.replace("4.0", "")
        with pytest.raises(DataFormatError, match="line 5, column 'score'"):
            load_long_csv(_write(tmp_path, text))

    def test_duplicate_time(self, tmp_path):
        text = WELL_FORMED + "a,0,2,9.9\n"
        with pytest.raises(DataFormatError, match="duplicate row for time 2"):
            load_long_csv(_write(tmp_path, text))

    def test_group_change(self, tmp_path):
        text = WELL_FORMED.replace("a,0,2", "a,1,2")
        with pytest.raises(DataFormatError, match="group changes"):
            load_long_csv(_write(tmp_path, text))

    def test_header_contract(self, tmp_path):
        with pytest.raises(DataFormatError, match="header"):
            load_long_csv(_write(tmp_path, "id,group,time,score\na,0,1,1.0\n"))

    def test_all_problems_collected(self, tmp_path):
        text = "subject,group,time,score\na,0,1,x\nb,3,1,1.0\n"
        with pytest.raises(DataFormatError) as excinfo:
            load_long_csv(_write(tmp_path, text))
        assert len(excinfo.value.problems) == 2


class TestWriteLongCsv:
    """write_long_csv"""

    def test_written_file_reloads(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = LongitudinalDataset.from_classes(rng.normal(size=(3, 6)), rng.normal(size=(2, 6)), p=2, t=3,
                                              variable_names=['mood', 'sleep'])
        path = write_long_csv(ds, tmp_path / 'out' / 'sample.csv')
        reloaded = load_long_csv(path)
        assert reloaded.variable_names == ['mood', 'sleep']
        assert reloaded.labels.tolist() == ds.labels.tolist()
        assert np.allclose(reloaded.values, ds.values, rtol=1e-9)

    def test_layout_is_subject_then_time(self, tmp_path):
        ds = LongitudinalDataset(values=np.arange(4.0).reshape(2, 1, 2), labels=[0, 1], subject_ids=['x', 'y'])
        frame = pd.read_csv(PanelIngester().write(ds, tmp_path / 'panel.csv'))
        assert list(frame.columns) == ['subject', 'group', 'time', 'var1']
        assert frame['subject'].tolist() == ['x', 'x', 'y', 'y']
        assert frame['time'].tolist() == [1, 2, 1, 2]


class TestValidatePanel:
    """validate_panel on in-memory frames"""

    def test_returns_variables_and_time_points(self):
        raw = pd.DataFrame({'subject': ['a', 'a'], 'group': ['0', '0'], 'time': ['1', '2'],
                            'v1': ['1', '2'], 'v2': ['3', '4']})
        clean, variables, t = validate_panel(raw)
        assert variables == ['v1', 'v2']
        assert t == 2
        assert clean['time'].tolist() == [1, 2]

    def test_no_measurement_columns(self):
        raw = pd.DataFrame({'subject': ['a'], 'group': ['0'], 'time': ['1']})
        with pytest.raises(DataFormatError, match="no measurement columns"):
            validate_panel(raw)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
