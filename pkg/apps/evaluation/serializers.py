from rest_framework import serializers

VERDICT_CHOICES = ['in_kb', 'out_of_kb', 'not_entity']


class LinkGoldRowSerializer(serializers.Serializer):
    table_id = serializers.CharField()
    row_index = serializers.IntegerField(min_value=0)
    entity_id = serializers.CharField()


class HeadingGoldRowSerializer(serializers.Serializer):
    table_id = serializers.CharField()
    column_index = serializers.IntegerField(min_value=0)
    property_id = serializers.CharField()


class DiscoveryGoldRowSerializer(serializers.Serializer):
    mention = serializers.CharField(trim_whitespace=False)
    verdict = serializers.ChoiceField(choices=VERDICT_CHOICES)


class ResolutionGoldRowSerializer(serializers.Serializer):
    mention1 = serializers.CharField(trim_whitespace=False)
    table1 = serializers.CharField()
    mention2 = serializers.CharField(trim_whitespace=False)
    table2 = serializers.CharField()
    same = serializers.BooleanField()
