from django.urls import path

from . import api

urlpatterns = [
    path('query/', api.QueryView.as_view(), name='api_query'),
    path('anchors/', api.AnchorListView.as_view(), name='api_anchors'),
    path('anchors/<int:height>/', api.AnchorDetailView.as_view(), name='api_anchor_detail'),
    path('blocks/', api.BlockListView.as_view(), name='api_blocks'),
    path('objects/<str:cid>/', api.StoredObjectView.as_view(), name='api_object_detail'),
]
