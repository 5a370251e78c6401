from rest_framework import serializers


class QueryRequestSerializer(serializers.Serializer):
    sql = serializers.CharField(trim_whitespace=False)
    emit_vo = serializers.BooleanField(default=False)
    explain = serializers.BooleanField(default=False)


class EntrySerializer(serializers.Serializer):
    entry_id = serializers.IntegerField()
    amount = serializers.IntegerField()
    addresses = serializers.ListField(child=serializers.CharField())
    timestamp = serializers.IntegerField()
    imagecid = serializers.CharField(allow_null=True)
    videocid = serializers.CharField(allow_null=True)


class ResultRowSerializer(EntrySerializer):
    image_bytes = serializers.IntegerField(allow_null=True)
    video_bytes = serializers.IntegerField(allow_null=True)


class QueryResultSerializer(serializers.Serializer):
    kind = serializers.CharField()
    rows = ResultRowSerializer(many=True)
    anchor_height = serializers.IntegerField()
    vo = serializers.CharField(allow_null=True)

    @classmethod
    def from_result(cls, result, emit_vo=False):
        return cls({
            'kind': 'result',
            'rows': [row.as_dict() for row in result.rows],
            'anchor_height': result.anchor_height,
            'vo': result.vo_bytes.hex() if emit_vo else None,
        })


class GasSerializer(serializers.Serializer):
    op = serializers.CharField()
    writes = serializers.IntegerField()
    reads = serializers.IntegerField()
    compute = serializers.IntegerField()
    total_gas = serializers.IntegerField()


class ReceiptSerializer(serializers.Serializer):
    kind = serializers.CharField(default='receipt')
    op = serializers.CharField()
    entry_ids = serializers.ListField(child=serializers.IntegerField())
    retired = serializers.ListField(child=serializers.IntegerField())
    block_height = serializers.IntegerField()
    epoch = serializers.IntegerField()
    gas = serializers.DictField(child=GasSerializer())
    total_gas = serializers.IntegerField()

    @classmethod
    def from_receipt(cls, receipt):
        return cls({'kind': 'receipt', **receipt.as_dict()})


class PlanSerializer(serializers.Serializer):
    kind = serializers.CharField(default='plan')
    steps = serializers.ListField(child=serializers.CharField())
    est_cost = serializers.IntegerField()


class AnchorSerializer(serializers.Serializer):
    height = serializers.IntegerField()
    bhash_root = serializers.CharField()
    trie_root = serializers.CharField()
    block_digest = serializers.CharField()

    @classmethod
    def from_block(cls, block):
        return cls({
            'height': block.height,
            'bhash_root': block.anchored_roots[0].hex(),
            'trie_root': block.anchored_roots[1].hex(),
            'block_digest': block.block_digest.hex(),
        })


class BlockSerializer(serializers.Serializer):
    height = serializers.IntegerField()
    prev_digest = serializers.CharField()
    timestamp = serializers.IntegerField()
    entries = EntrySerializer(many=True)
    retired = serializers.ListField(child=serializers.IntegerField())
    bhash_root = serializers.CharField()
    trie_root = serializers.CharField()
    block_digest = serializers.CharField()


class StoredObjectSerializer(serializers.Serializer):
    cid = serializers.CharField()
    media_kind = serializers.CharField()
    size = serializers.IntegerField()
    payload = serializers.CharField(help_text="Hex-encoded bytes.")

    @classmethod
    def from_object(cls, stored):
        return cls({
            'cid': stored.cid.hex(),
            'media_kind': stored.media_kind.value,
            'size': len(stored.payload),
            'payload': stored.payload.hex(),
        })


class ErrorSerializer(serializers.Serializer):
    error = serializers.CharField()

