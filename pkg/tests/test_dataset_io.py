import pytest

from fridgevision.dataset_io import (
    CategoryMap,
    ImageAnnotations,
    TrackingList,
    load_tracking_list,
    normalize_category,
    parse_sku110k,
    parse_yolo,
    remap_categories,
    write_sku110k,
    write_yolo,
)
from fridgevision.errors import ParseError, ValidationError
from fridgevision.geometry import Box

NEEDS_JSON = b"""
[
  {"name": "Banana", "desired_quantity": 6},
  {"name": "Avacado", "desired_quantity": 4},
  {"name": "Milk", "desired_quantity": 2},
  {"name": "Strawberries", "desired_quantity": 2},
  {"name": "Blueberries", "desired_quantity": 2},
  {"name": "tamatos", "desired_quantity": 5},
  {"name": "carrots", "desired_quantity": 8},
  {"name": "Salad Mix", "desired_quantity": 2},
  {"name": "egg white", "desired_quantity": 12}
]
"""


class TestParseSku110k:
    def test_single_row(self):
        images = parse_sku110k(b"img_1.jpg,0,0,10,10,banana,100,100\n")
        assert len(images) == 1
        img = images[0]
        assert img.image_name == "img_1.jpg"
        assert (img.image_width, img.image_height) == (100, 100)
        assert img.annotations == [(Box(0, 0, 10, 10), "banana")]

    def test_empty_input(self):
        assert parse_sku110k(b"") == []

    def test_header_auto_detected(self):
        data = (
            b"image_name,x1,y1,x2,y2,class,image_width,image_height\n"
            b"img_1.jpg,0,0,10,10,object,100,100\n"
        )
        images = parse_sku110k(data)
        assert len(images) == 1
        assert images[0].annotations[0][1] == "object"

    def test_groups_by_image_preserving_order(self):
        data = (
            b"b.jpg,0,0,5,5,banana,50,50\n"
            b"a.jpg,0,0,5,5,milk,50,50\n"
            b"b.jpg,10,10,20,20,banana,50,50\n"
        )
        images = parse_sku110k(data)
        assert [img.image_name for img in images] == ["b.jpg", "a.jpg"]
        assert len(images[0].annotations) == 2

    def test_inverted_box_is_validation_error(self):
        with pytest.raises(ValidationError, match="line 1"):
            parse_sku110k(b"img_1.jpg,10,0,5,10,banana,100,100\n")

    def test_wrong_column_count(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_sku110k(b"img.jpg,0,0,10,10,banana,100,100\nimg.jpg,1,2,3\n")

    def test_non_numeric_coordinate(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_sku110k(
                b"img.jpg,0,0,10,10,banana,100,100\nimg.jpg,x,0,10,10,banana,100,100\n"
            )

    def test_inconsistent_dimensions(self):
        data = (
            b"img.jpg,0,0,10,10,banana,100,100\n"
            b"img.jpg,0,0,10,10,banana,100,200\n"
        )
        with pytest.raises(ValidationError, match="line 2"):
            parse_sku110k(data)

    def test_small_excursion_clipped(self):
        images = parse_sku110k(b"img.jpg,-1.5,0,10,10,banana,100,100\n")
        assert images[0].annotations[0][0] == Box(0, 0, 10, 10)

    def test_large_excursion_rejected(self):
        with pytest.raises(ValidationError, match="line 1"):
            parse_sku110k(b"img.jpg,-8,0,10,10,banana,100,100\n")

    def test_boxes_never_violate_geometry(self):
        images = parse_sku110k(
            b"img.jpg,0,0,101.5,99,banana,100,100\n"
            b"img.jpg,3.25,4.5,60.75,70.125,object,100,100\n"
        )
        for box, _ in images[0].annotations:
            assert 0 <= box.x1 < box.x2 <= 100
            assert 0 <= box.y1 < box.y2 <= 100


class TestParseYolo:
    INDEX_MAP = {0: "banana", 1: "milk"}

    def test_normalized_center_format(self):
        img = parse_yolo("0 0.5 0.5 0.2 0.1", "f.png", 640, 640, self.INDEX_MAP)
        assert img.annotations == [(Box(256, 288, 384, 352), "banana")]

    def test_empty_text(self):
        img = parse_yolo("", "f.png", 640, 640, self.INDEX_MAP)
        assert img.annotations == []

    def test_out_of_range_value(self):
        with pytest.raises(ValidationError, match="line 1"):
            parse_yolo("0 0.5 0.5 1.2 0.1", "f.png", 640, 640, self.INDEX_MAP)

    def test_unknown_index(self):
        with pytest.raises(ValidationError, match="unknown class index 7"):
            parse_yolo("7 0.5 0.5 0.2 0.1", "f.png", 640, 640, self.INDEX_MAP)

    def test_zero_size_box(self):
        with pytest.raises(ValidationError, match="zero-size"):
            parse_yolo("0 0.5 0.5 0 0.1", "f.png", 640, 640, self.INDEX_MAP)

    def test_box_clipped_to_bounds(self):
        # cx - w/2 < 0 by under half a pixel at this image size.
        img = parse_yolo("0 0.001 0.5 0.004 0.1", "f.png", 640, 640, self.INDEX_MAP)
        box = img.annotations[0][0]
        assert box.x1 == 0.0


class TestWriteRoundTrip:
    def three_image_fixture(self):
        return [
            ImageAnnotations("a.jpg", 640, 480, [
                (Box(0, 0, 10, 10), "banana"),
                (Box(3.5, 4.25, 100.125, 200.0625), "milk"),
            ]),
            ImageAnnotations("b.jpg", 100, 100, []),
            ImageAnnotations("c.jpg", 1024, 768, [
                (Box(512, 384, 768, 576), "carrots"),
            ]),
        ]

    def test_sku110k_round_trip_identity(self):
        dataset = self.three_image_fixture()
        # Image b.jpg has no annotations so it cannot appear in row-based CSV.
        reparsed = parse_sku110k(write_sku110k(dataset))
        expected = [img for img in dataset if img.annotations]
        assert len(reparsed) == len(expected)
        for got, want in zip(reparsed, expected):
            assert got.image_name == want.image_name
            assert (got.image_width, got.image_height) == (
                want.image_width, want.image_height)
            assert got.annotations == want.annotations

    def test_yolo_write_matches_parse_inverse(self):
        dataset = [ImageAnnotations("f.png", 640, 640, [(Box(256, 288, 384, 352), "banana")])]
        files = write_yolo(dataset, {"banana": 0})
        assert files["f.png"] == b"0 0.500000 0.500000 0.200000 0.100000\n"

    def test_yolo_round_trip(self):
        # Coordinates chosen exactly representable at 6 decimals of the
        # normalized form, so the round trip is better than 1e-6 px.
        dataset = [
            ImageAnnotations("f.png", 640, 640, [
                (Box(256, 288, 384, 352), "banana"),
                (Box(0, 0, 64, 320), "milk"),
            ]),
        ]
        files = write_yolo(dataset, {"banana": 0, "milk": 1})
        reparsed = parse_yolo(files["f.png"], "f.png", 640, 640, {0: "banana", 1: "milk"})
        for (got_box, got_cat), (want_box, want_cat) in zip(
                reparsed.annotations, dataset[0].annotations):
            assert got_cat == want_cat
            for g, w in zip(got_box.as_tuple(), want_box.as_tuple()):
                assert abs(g - w) <= 1e-6

    def test_unmappable_category_named_in_error(self):
        dataset = [ImageAnnotations("f.png", 64, 64, [(Box(0, 0, 8, 8), "papaya")])]
        with pytest.raises(ValidationError, match="papaya"):
            write_yolo(dataset, {"banana": 0})

    def test_empty_dataset(self):
        assert parse_sku110k(write_sku110k([])) == []
        assert write_yolo([], {}) == {}


class TestTrackingList:
    def test_paper_nine_items(self):
        tracking = load_tracking_list(NEEDS_JSON)
        assert tracking.names == (
            "banana", "avocado", "milk", "strawberries", "blueberries",
            "tomatoes", "carrots", "salad mix", "egg white",
        )
        assert tracking.desired("banana") == 6

    def test_duplicate_after_normalization(self):
        data = b'[{"name": "banana", "desired_quantity": 1}, {"name": "Banana", "desired_quantity": 2}]'
        with pytest.raises(ValidationError, match="duplicate"):
            load_tracking_list(data)

    def test_empty_list(self):
        with pytest.raises(ValidationError, match="empty"):
            load_tracking_list(b"[]")

    def test_quantity_below_one(self):
        with pytest.raises(ValidationError, match="desired_quantity"):
            load_tracking_list(b'[{"name": "banana", "desired_quantity": 0}]')

    def test_misspellings_normalized(self):
        assert normalize_category("  Avacado ") == "avocado"
        assert normalize_category("tamatos") == "tomatoes"
        assert normalize_category("Salad  Mix") == "salad mix"


class TestRemapCategories:
    def dataset(self):
        return [
            ImageAnnotations("a.jpg", 100, 100, [
                (Box(0, 0, 10, 10), "Avocado ripe"),
                (Box(20, 20, 30, 30), "Apple Golden"),
                (Box(40, 40, 50, 50), "banana"),
            ]),
        ]

    def test_mapped_category_renamed(self):
        cmap = CategoryMap({"Avocado ripe": "avocado", "banana": "banana"})
        remapped, dropped = remap_categories(self.dataset(), cmap)
        categories = [cat for _, cat in remapped[0].annotations]
        assert categories == ["avocado", "banana"]
        assert dropped == {"Apple Golden": 1}

    def test_identity_map_keeps_dataset(self):
        dataset = [ImageAnnotations("a.jpg", 100, 100, [(Box(0, 0, 10, 10), "banana")])]
        remapped, dropped = remap_categories(dataset, CategoryMap({"banana": "banana"}))
        assert remapped[0].annotations == dataset[0].annotations
        assert dropped == {}

    def test_all_unmapped_drops_everything(self):
        remapped, dropped = remap_categories(self.dataset(), CategoryMap({}))
        assert remapped[0].annotations == []
        assert sum(dropped.values()) == 3
        # The image survives as a negative example.
        assert remapped[0].image_name == "a.jpg"

    def test_annotation_count_conservation(self):
        cmap = CategoryMap({"Avocado ripe": "avocado"})
        dataset = self.dataset()
        total_in = sum(len(img.annotations) for img in dataset)
        remapped, dropped = remap_categories(dataset, cmap)
        total_out = sum(len(img.annotations) for img in remapped)
        assert total_in == total_out + sum(dropped.values())

    def test_map_validated_against_tracking_list(self):
        tracking = load_tracking_list(NEEDS_JSON)
        CategoryMap({"Banana": "banana"}).validate_against(tracking)
        with pytest.raises(ValidationError, match="papaya"):
            CategoryMap({"x": "papaya"}).validate_against(tracking)

    def test_explicit_drop_marker(self):
        cmap = CategoryMap.from_json(b'{"Apple Golden": "drop", "Avocado ripe": "Avocado"}')
        remapped, dropped = remap_categories(self.dataset(), cmap)
        assert dropped == {"Apple Golden": 1, "banana": 1}
        assert remapped[0].annotations[0][1] == "avocado"
