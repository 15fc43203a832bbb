from rest_framework import serializers

from .domain import MAX_YEAR, MIN_YEAR


class CellField(serializers.CharField):
    """A table cell: blanks allowed, whitespace kept as written."""

    def __init__(self, **kwargs):
        kwargs.setdefault('allow_blank', True)
        kwargs.setdefault('trim_whitespace', False)
        super().__init__(**kwargs)


class TableRecordSerializer(serializers.Serializer):
    """Canonical row-major JSON-lines record for one table."""

    id = serializers.CharField(max_length=512)
    headings = serializers.ListField(child=CellField(), required=False, default=list)
    rows = serializers.ListField(child=serializers.ListField(child=CellField()))
    coreColumnIndex = serializers.IntegerField(min_value=0)
    headerRowIndex = serializers.IntegerField(min_value=0, allow_null=True, required=False, default=0)
    pageTitle = serializers.CharField(allow_blank=True, trim_whitespace=False, required=False, default='')
    caption = serializers.CharField(allow_blank=True, trim_whitespace=False, required=False, default='')
    surroundingText = serializers.CharField(allow_blank=True, trim_whitespace=False, required=False, default='')
    lastEditYear = serializers.IntegerField(
        min_value=MIN_YEAR, max_value=MAX_YEAR, allow_null=True, required=False, default=None
    )

    def validate(self, attrs):
        header_row = attrs.get('headerRowIndex')
        if header_row is not None and header_row >= len(attrs['rows']):
            if attrs['rows'] or not attrs.get('headings'):
                raise serializers.ValidationError(
                    {'headerRowIndex': f'Header row {header_row} outside {len(attrs["rows"])} rows'}
                )
        return attrs


class WdcRecordSerializer(serializers.Serializer):
    """Web Data Commons style record; ``relation`` is column-major when horizontal."""

    relation = serializers.ListField(child=serializers.ListField(child=CellField()))
    tableOrientation = serializers.ChoiceField(
        choices=['HORIZONTAL', 'VERTICAL'], required=False, default='HORIZONTAL'
    )
    keyColumnIndex = serializers.IntegerField(min_value=0)
    hasHeader = serializers.BooleanField(required=False, default=True)
    headerRowIndex = serializers.IntegerField(min_value=0, required=False, default=0)
    id = serializers.CharField(required=False, allow_blank=True, default='')
    url = serializers.CharField(required=False, allow_blank=True, default='')
    tableNum = serializers.IntegerField(required=False, default=0)
    pageTitle = serializers.CharField(allow_blank=True, required=False, default='')
    title = serializers.CharField(allow_blank=True, required=False, default='')
    textBeforeTable = serializers.CharField(allow_blank=True, required=False, default='')
    textAfterTable = serializers.CharField(allow_blank=True, required=False, default='')
    lastModified = serializers.CharField(allow_blank=True, allow_null=True, required=False, default='')
    tableYear = serializers.IntegerField(allow_null=True, required=False, default=None)
