import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carbon_audit.errors import ParseError, UnsupportedFormatError
from carbon_audit.raster import GeoGrid, parse_esri_ascii, parse_geotiff_subset, read_geotiff, write_esri_ascii

ASC_2X2 = """ncols 2
nrows 2
xllcorner -80.5
yllcorner -1.25
cellsize 0.25
NODATA_value -9999
1 2
3 4
"""


class TestEsriAscii:
    def test_single_cell(self):
        g = parse_esri_ascii("ncols 1\nnrows 1\nxllcorner 10\nyllcorner 20\ncellsize 0.00027\n42.0\n")
        assert g.values.tolist() == [[42.0]]
        assert g.pixel_width_deg == g.pixel_height_deg == 0.00027

    def test_two_by_two(self):
        g = parse_esri_ascii(ASC_2X2)
        assert g.values.ravel().tolist() == [1.0, 2.0, 3.0, 4.0]
        # origin = (xllcorner, yllcorner + 2 * cellsize)
        assert (g.origin_lon, g.origin_lat) == (-80.5, -0.75)
        assert g.nodata == -9999.0

    def test_headers_case_insensitive_and_center(self):
        g = parse_esri_ascii("NCOLS 1\nNROWS 2\nXLLCENTER 0.5\nYLLCENTER 0.5\nCELLSIZE 1\n5\n6\n")
        assert (g.origin_lon, g.origin_lat) == (0.0, 2.0)
        assert g.values.tolist() == [[5.0], [6.0]]

    def test_value_count_mismatch(self):
        with pytest.raises(ParseError, match="expected 4 values"):
            parse_esri_ascii(ASC_2X2.replace("3 4", "3"))

    def test_missing_header(self):
        with pytest.raises(ParseError, match="cellsize"):
            parse_esri_ascii("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\n1\n")

    def test_non_numeric_token_position(self):
        with pytest.raises(ParseError, match=r"line 8, value 2 .*'x'"):
            parse_esri_ascii(ASC_2X2.replace("3 4", "3 x"))

    def test_unknown_header(self):
        with pytest.raises(ParseError, match="bogus"):
            parse_esri_ascii("bogus 1\n" + ASC_2X2)

    def test_roundtrip_fixture(self):
        g = parse_esri_ascii(ASC_2X2)
        assert parse_esri_ascii(write_esri_ascii(g)) == g

    def test_header_emission(self):
        text = write_esri_ascii(GeoGrid([[1.5]], 0.0, 0.0, 0.1, 0.1))
        assert "ncols 1\n" in text and "nrows 1\n" in text
        assert "NODATA_value" not in text

    def test_non_square_rejected(self):
        with pytest.raises(UnsupportedFormatError, match="square"):
            write_esri_ascii(GeoGrid([[1.0]], 0.0, 0.0, 0.1, 0.2))

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(1, 12),
        st.integers(1, 12),
        st.floats(-180, 180),
        st.floats(-85, 85),
        st.floats(1e-6, 1.0),
        st.integers(0, 2**32 - 1),
        st.booleans(),
    )
    def test_roundtrip_property(self, nr, nc, lon, lat, cell, seed, with_nodata):
        rng = np.random.default_rng(seed)
        vals = rng.normal(50, 40, size=(nr, nc)) * 10.0 ** rng.integers(-8, 8)
        nodata = None
        if with_nodata:
            nodata = -9999.0
            vals[rng.random((nr, nc)) < 0.2] = nodata
        g = GeoGrid(vals, lon, lat, cell, cell, nodata)
        assert parse_esri_ascii(write_esri_ascii(g)) == g


FLOAT_VALUES = np.array(
    [[12.5, 40.25, 0.0], [176.0, -9999.0, 3.125], [1.0e-3, 62.0, 141.75]], dtype="<f4"
).astype(np.float64)
UINT16_VALUES = np.array([[0, 1, 65535], [300, 47, 19], [160, 27, 29], [24, 17, 9]], dtype=np.float64)


class TestGeoTiff:
    @pytest.mark.parametrize("name", ["float32_none.tif", "float32_deflate.tif", "float32_deflate_strips.tif"])
    def test_float32(self, data_dir, name):
        g = read_geotiff(data_dir / name)
        assert np.array_equal(g.values, FLOAT_VALUES)
        assert (g.origin_lon, g.origin_lat) == (-80.5, -1.0)
        assert g.pixel_width_deg == g.pixel_height_deg == 0.00025
        assert g.nodata == -9999.0
        assert g.nodata_mask.sum() == 1

    @pytest.mark.parametrize("name", ["uint16_none.tif", "uint16_deflate.tif"])
    def test_uint16(self, data_dir, name):
        g = read_geotiff(data_dir / name)
        assert g.values.dtype == np.float64
        assert np.array_equal(g.values, UINT16_VALUES)
        assert g.nodata is None

    def test_uint8(self, data_dir):
        g = read_geotiff(data_dir / "uint8_none.tif")
        assert g.values.tolist() == np.arange(12, dtype=float).reshape(3, 4).tolist()

    def test_compressed_equals_uncompressed(self, data_dir):
        assert read_geotiff(data_dir / "float32_none.tif") == read_geotiff(data_dir / "float32_deflate.tif")

    @pytest.mark.parametrize(
        "name, message",
        [
            ("tiled.tif", "tiled layout"),
            ("bigendian.tif", "big-endian"),
            ("bigtiff.tif", "BigTIFF"),
            ("lzma.tif", "compression 34925"),
            ("no_georef.tif", "ModelPixelScaleTag"),
            ("float64.tif", "64 bits per sample"),
            ("rgb.tif", "3 samples per pixel"),
        ],
    )
    def test_out_of_subset(self, data_dir, name, message):
        with pytest.raises(UnsupportedFormatError, match=message):
            read_geotiff(data_dir / name)

    def test_truncated(self, data_dir):
        data = (data_dir / "float32_none.tif").read_bytes()
        with pytest.raises(ParseError):
            parse_geotiff_subset(data[:20])

    def test_not_tiff(self):
        with pytest.raises(ParseError, match="not a TIFF"):
            parse_geotiff_subset(b"GIF89a-----------")
