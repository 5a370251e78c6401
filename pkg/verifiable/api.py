import logging

from drf_spectacular.utils import extend_schema
from rest_framework import permissions, status
from rest_framework.renderers import JSONRenderer
from rest_framework.response import Response
from rest_framework.views import APIView

from .core import ContentId
from .exceptions import (
    ChainBroken,
    ContentNotFound,
    EntryNotFound,
    HybridQueryError,
    IntegrityFailure,
    PayloadTooLarge,
    UnknownHeight,
    VerificationFailed,
)
from .middleware import default_engine, parse
from .middleware.statements import is_select
from .serializers import (
    AnchorSerializer,
    BlockSerializer,
    ErrorSerializer,
    PlanSerializer,
    QueryRequestSerializer,
    QueryResultSerializer,
    ReceiptSerializer,
    StoredObjectSerializer,
)

logger = logging.getLogger(__name__)

ERROR_STATUS = (
    ((EntryNotFound, UnknownHeight, ContentNotFound), status.HTTP_404_NOT_FOUND),
    ((VerificationFailed, IntegrityFailure, ChainBroken), status.HTTP_409_CONFLICT),
    ((PayloadTooLarge,), status.HTTP_413_REQUEST_ENTITY_TOO_LARGE),
)


def error_response(exc):
    for kinds, code in ERROR_STATUS:
        if isinstance(exc, kinds):
            break
    else:
        code = status.HTTP_400_BAD_REQUEST
    logger.debug("request failed with %s: %s", code, exc)
    return Response({'error': str(exc)}, status=code)


class QueryView(APIView):
    permission_classes = [permissions.AllowAny]
    renderer_classes = [JSONRenderer]

    @extend_schema(
        request=QueryRequestSerializer,
        responses={200: QueryResultSerializer, 400: ErrorSerializer, 404: ErrorSerializer, 409: ErrorSerializer},
    )
    def post(self, request):
        serializer = QueryRequestSerializer(data=request.data)
        serializer.is_valid(raise_exception=True)
        engine = default_engine()
        try:
            statement = parse(serializer.validated_data['sql'])
            if serializer.validated_data['explain']:
                return Response(PlanSerializer({'kind': 'plan', **engine.explain(statement).as_dict()}).data)
            result = engine.execute(statement)
        except HybridQueryError as exc:
            return error_response(exc)

        if is_select(statement):
            return Response(QueryResultSerializer.from_result(result, serializer.validated_data['emit_vo']).data)
        if engine.state_dir is not None:
            engine.save()
        return Response(ReceiptSerializer.from_receipt(result).data, status=status.HTTP_201_CREATED)


class AnchorListView(APIView):
    permission_classes = [permissions.AllowAny]
    renderer_classes = [JSONRenderer]

    @extend_schema(responses=AnchorSerializer)
    def get(self, request):
        engine = default_engine()
        data = AnchorSerializer.from_block(engine.ledger.latest()).data
        data['stats'] = engine.stats()
        return Response(data)


class AnchorDetailView(APIView):
    permission_classes = [permissions.AllowAny]
    renderer_classes = [JSONRenderer]

    @extend_schema(responses={200: AnchorSerializer, 404: ErrorSerializer})
    def get(self, request, height):
        try:
            block = default_engine().ledger.block(height)
        except UnknownHeight as exc:
            return error_response(exc)
        return Response(AnchorSerializer.from_block(block).data)


class BlockListView(APIView):
    permission_classes = [permissions.AllowAny]
    renderer_classes = [JSONRenderer]

    @extend_schema(responses=BlockSerializer(many=True))
    def get(self, request):
        blocks = [block.as_dict() for block in default_engine().ledger]
        return Response(BlockSerializer(blocks, many=True).data)


class StoredObjectView(APIView):
    permission_classes = [permissions.AllowAny]
    renderer_classes = [JSONRenderer]

    @extend_schema(responses={200: StoredObjectSerializer, 404: ErrorSerializer, 409: ErrorSerializer})
    def get(self, request, cid):
        try:
            stored = default_engine().store.get_object(ContentId.fromhex(cid))
        except HybridQueryError as exc:
            return error_response(exc)
        return Response(StoredObjectSerializer.from_object(stored).data)
